"""greybox_ot: completing misspecified physics models from unpaired data
with conditional optimal-transport maps and grey-box neural ODEs."""

__version__ = "0.1.0"
