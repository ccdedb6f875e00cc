"""Self-alignment pretraining toolkit for cross-lingual biomedical entity linking."""

from xlsap.core import NameRecord, TrainConfig, load_config, validate_records

__all__ = ["NameRecord", "TrainConfig", "load_config", "validate_records"]
__version__ = "0.1.0"
