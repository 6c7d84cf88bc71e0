# src/numerics — Dense matrices and reverse-mode differentiation
# Contains: Matrix helpers, DiffNode graph engine, finite-difference checker
