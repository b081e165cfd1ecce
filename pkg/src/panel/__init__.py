"""Panel-data storage and ingestion."""
