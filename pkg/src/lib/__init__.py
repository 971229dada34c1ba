# Shared infrastructure: numerics, neural-network layers, errors, logging
