"""Self-hosted meta-transaction relayer with an enclave-style signing boundary."""

__version__ = "0.1.0"
