"""Pipeline agents: manifest ingestion, placement, stem building, output writing, review and evaluation."""
