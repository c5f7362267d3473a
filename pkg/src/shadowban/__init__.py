"""Statistical tooling for assessing shadow banning on interaction ego-graphs."""

__version__ = "0.1.0"
