"""
Experiment orchestration: the language-guided exploration loop, evaluation
and the checkpointed LangGraph pipeline.
"""
