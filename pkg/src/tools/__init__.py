# Evaluable methods and their registry
