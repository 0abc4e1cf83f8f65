"""Dataset loading, normalisation and filtering."""

from amm_lab.ingest.filters import DatasetFilter, apply_filters
from amm_lab.ingest.fixture import dumps_json, parse_fixture, write_fixture
from amm_lab.ingest.remote import ENDPOINT_ENV, fetch_remote, load_field_map
from amm_lab.ingest.schema import Dataset, PoolDescriptor, TokenId, pool_name

__all__ = [
    "ENDPOINT_ENV",
    "Dataset",
    "DatasetFilter",
    "PoolDescriptor",
    "TokenId",
    "apply_filters",
    "dumps_json",
    "fetch_remote",
    "load_field_map",
    "parse_fixture",
    "pool_name",
    "write_fixture",
]
