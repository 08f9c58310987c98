"""Double shooting for nodal solutions of Yamabe-type equations on the round sphere."""

__version__ = "0.1.0"
