"""micropad: detect microservice pattern instances from Infrastructure-as-Code artifacts."""

__version__ = "0.1.0"
