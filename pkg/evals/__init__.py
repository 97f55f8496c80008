"""
Relevance metrics, gold-frequency baselines, reports and acceptance checks.
"""
