# Configuration loading and scale presets
