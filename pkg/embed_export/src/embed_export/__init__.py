"""Batch name-embedding exporter for .ebed store files."""

__version__ = "0.1.0"

from .exporter import ExportError, ExportJob, ExportSummary, export_embeddings, read_name_list
from .store_format import StoreFormatError, normalize_name, write_store
