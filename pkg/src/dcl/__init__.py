# src/dcl — Distance-aware contrastive learning
# Contains: memory bank, positive/negative weights, lambda_N schedule, loss, likelihood oracle
