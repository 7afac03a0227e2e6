# Experiment config, training stages, sweeps and ablations
