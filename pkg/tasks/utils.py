SPECTRAL_EXPERIMENTS = ["covariance", "wick-moments"]
PPHI2_EXPERIMENTS = ["ibp", "theorem1-conditions"]
APRIORI_EXPERIMENTS = ["gradient-bound", "energy-estimate", "l4-estimate", "lemma-suite", "eq34-scan"]
DUHAMEL_EXPERIMENTS = ["duhamel-l2", "duhamel-l1", "lp-interval"]
MARKOV_EXPERIMENTS = ["markov-suite"]


TASKS = ["spectral", "pphi2", "apriori", "duhamel", "markov"]

EXPERIMENTS = SPECTRAL_EXPERIMENTS + PPHI2_EXPERIMENTS + APRIORI_EXPERIMENTS + DUHAMEL_EXPERIMENTS + MARKOV_EXPERIMENTS

EXPERIMENT_TASK = {
    **{name: "spectral" for name in SPECTRAL_EXPERIMENTS},
    **{name: "pphi2" for name in PPHI2_EXPERIMENTS},
    **{name: "apriori" for name in APRIORI_EXPERIMENTS},
    **{name: "duhamel" for name in DUHAMEL_EXPERIMENTS},
    **{name: "markov" for name in MARKOV_EXPERIMENTS},
}

# experiments that draw random numbers; the others are deterministic given the config
STOCHASTIC_EXPERIMENTS = SPECTRAL_EXPERIMENTS + PPHI2_EXPERIMENTS + MARKOV_EXPERIMENTS
