"""Exception types raised across the toolkit."""

from __future__ import annotations


class AmmLabError(Exception):
    """Base class for every error raised by amm_lab."""


class DomainError(AmmLabError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class OrderingError(AmmLabError, ValueError):
    """Events or snapshots are not in the required temporal order."""


class DuplicateEventError(AmmLabError, ValueError):
    """Two events share the same (position_id, block, log_index) key."""


class ImbalanceError(AmmLabError, ValueError):
    """A withdrawal removes more liquidity than the position has open."""

    def __init__(self, position_id: str, block: int, requested: int, available: int):
        self.position_id = position_id
        self.block = block
        self.requested = requested
        self.available = available
        super().__init__(
            f"position {position_id!r} at block {block}: withdrawal of "
            f"{requested} exceeds open liquidity {available}"
        )


class ParseError(AmmLabError, ValueError):
    """A fixture record violates the documented schema."""

    def __init__(self, message: str, *, location: str | None = None, line: int | None = None):
        self.location = location
        self.line = line
        where = []
        if location:
            where.append(location)
        if line is not None:
            where.append(f"line {line}")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)


class ReferentialError(ParseError):
    """An event references a pool that the dataset does not declare."""


class TransportError(AmmLabError, OSError):
    """The remote endpoint could not be reached after all retries."""


class DecodeError(AmmLabError, ValueError):
    """The remote endpoint answered with a payload that does not decode."""


class ConfigError(AmmLabError, ValueError):
    """A configuration file or strategy grid is invalid."""
