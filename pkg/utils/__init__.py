"""
Utilities Module - Reusable Components

Input readers, gridded products, the model store, run configuration,
report writing and data-source adapters.
"""

__all__ = [
    'canonical_json',
    'data_adapters',
    'data_readers',
    'environment_config',
    'grid_products',
    'model_store',
    'report_writer',
    'run_config',
]
