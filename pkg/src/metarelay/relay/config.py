"""Relay configuration: flat key=value file plus environment-provided secret."""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from ..txcore.hexcodec import hex_to_address
from ..txcore.signing import Address

PLATFORM_SECRET_ENV = "METARELAY_PLATFORM_SECRET"


@dataclass
class RelayConfig:
    rpc_endpoint: str = "http://127.0.0.1:8545"
    chain_id: int = 1337
    listen_host: str = "127.0.0.1"
    listen_port: int = 8600
    confirmation_timeout: float = 10.0
    poll_interval: float = 0.1
    funding_min_balance: int = 0
    funding_top_up: int = 0
    funding_period: float = 0.0  # 0 disables the daemon
    forwarder: Optional[Address] = None
    data_dir: Path = field(default_factory=lambda: Path("relay-data"))
    max_gas_limit: int = 500_000
    max_gas_price: int = 100 * 10 ** 9
    default_gas_price: int = 10 ** 9

    def __post_init__(self):
        if self.poll_interval >= self.confirmation_timeout:
            raise ValueError("poll_interval must be below confirmation_timeout")
        self.data_dir = Path(self.data_dir)

    @classmethod
    def from_file(cls, path) -> "RelayConfig":
        values = {}
        for line_no, line in enumerate(Path(path).read_text().splitlines(), 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{line_no}: expected key=value")
            key, _, value = line.partition("=")
            values[key.strip()] = value.strip()
        kwargs = {}
        for key in ("rpc_endpoint", "listen_host"):
            if key in values:
                kwargs[key] = values.pop(key)
        for key in ("chain_id", "listen_port", "funding_min_balance",
                    "funding_top_up", "max_gas_limit", "max_gas_price",
                    "default_gas_price"):
            if key in values:
                kwargs[key] = int(values.pop(key), 0)
        for key in ("confirmation_timeout", "poll_interval", "funding_period"):
            if key in values:
                kwargs[key] = float(values.pop(key))
        if "forwarder" in values:
            kwargs["forwarder"] = hex_to_address(values.pop("forwarder"))
        if "data_dir" in values:
            kwargs["data_dir"] = Path(values.pop("data_dir"))
        if values:
            raise ValueError(f"unknown config keys: {', '.join(sorted(values))}")
        return cls(**kwargs)


def platform_secret_from_env() -> bytes:
    secret = os.environ.get(PLATFORM_SECRET_ENV, "")
    if not secret:
        raise RuntimeError(f"{PLATFORM_SECRET_ENV} is not set")
    return secret.encode()
