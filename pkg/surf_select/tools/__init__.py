"""User-facing operations: ingestion, pipeline runs and exports."""
from .ingest import Dataset, load_dataset, build_dataset, dataset_from_arrays
from .pipeline import run_pipeline, augment_dataset
from .export import write_report, read_report, write_augmented_design, write_metrics

__all__ = [
    # Ingest
    "Dataset",
    "load_dataset",
    "build_dataset",
    "dataset_from_arrays",
    # Pipeline
    "run_pipeline",
    "augment_dataset",
    # Export
    "write_report",
    "read_report",
    "write_augmented_design",
    "write_metrics",
]
