"""
Agents: the Guide relevance scorer and the Explorer Q-learner.
"""
