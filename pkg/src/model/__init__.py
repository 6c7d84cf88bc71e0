# src/model — Source model (encoder + classifier)
# Contains: MLP encoder + linear classifier, SGD-momentum optimizer, checkpoint I/O
