"""Errors surfaced at the trusted boundary."""


class EnclaveError(Exception):
    """Base class for boundary-level failures."""


class AlreadyInitializedError(EnclaveError):
    pass


class UninitializedError(EnclaveError):
    pass


class InvalidOwnerKeyError(EnclaveError):
    pass


class UnknownAccountError(EnclaveError):
    pass


class AccountBusyError(EnclaveError):
    """Account already has an in-flight transaction."""


class PolicyViolationError(EnclaveError):
    """Requested gas or recipient exceeds the spending policy."""


class NoPendingError(EnclaveError):
    """Confirm/abort on an account with nothing in flight."""


class HashMismatchError(EnclaveError):
    """Confirm/abort names a hash other than the in-flight head."""


class SealError(EnclaveError):
    """Base class for seal/unseal failures."""


class SealAuthError(SealError):
    """Blob failed authentication or is not a sealed keystore."""


class RollbackError(SealError):
    """Blob is older than the freshest version already observed."""


class MeasurementMismatchError(SealError):
    """Blob was sealed under a different enclave identity."""


class EmptySecretError(EnclaveError):
    """Platform secret must be non-empty."""


class KeystoreFormatError(EnclaveError):
    """Canonical keystore serialization is malformed."""
