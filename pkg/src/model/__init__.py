# Matting network, checkpoints and losses
