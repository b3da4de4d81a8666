"""Core module for configuration, logging, errors, metrics and orchestration."""
