"""
Experiment runners, real-data ingestion and report writers.
"""
