"""Simulated trusted boundary: keystore, sealing, signing ECalls."""

from .core import (
    ENCLAVE_MEASUREMENT,
    BoundaryTranscript,
    Enclave,
    EnclaveInfo,
    HostStorage,
    InitReceipt,
    SignResult,
)
from .errors import (
    AccountBusyError,
    AlreadyInitializedError,
    EmptySecretError,
    EnclaveError,
    HashMismatchError,
    InvalidOwnerKeyError,
    KeystoreFormatError,
    MeasurementMismatchError,
    NoPendingError,
    PolicyViolationError,
    RollbackError,
    SealAuthError,
    SealError,
    UninitializedError,
    UnknownAccountError,
)
from .keystore import AccountRecord, Keystore, PendingTx, Role, SpendingPolicy
from .sealing import SealedBlob, derive_sealing_key, seal, unseal

__all__ = [
    "ENCLAVE_MEASUREMENT",
    "BoundaryTranscript",
    "Enclave",
    "EnclaveInfo",
    "HostStorage",
    "InitReceipt",
    "SignResult",
    "AccountBusyError",
    "AlreadyInitializedError",
    "EmptySecretError",
    "EnclaveError",
    "HashMismatchError",
    "InvalidOwnerKeyError",
    "KeystoreFormatError",
    "MeasurementMismatchError",
    "NoPendingError",
    "PolicyViolationError",
    "RollbackError",
    "SealAuthError",
    "SealError",
    "UninitializedError",
    "UnknownAccountError",
    "AccountRecord",
    "Keystore",
    "PendingTx",
    "Role",
    "SpendingPolicy",
    "SealedBlob",
    "derive_sealing_key",
    "seal",
    "unseal",
]
