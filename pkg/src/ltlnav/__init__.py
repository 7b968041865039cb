"""LTL specifications compiled to Buchi automata and reach-avoid subgoals,
with one subgoal-conditioned safe policy executing unseen specs zero-shot."""

__version__ = "0.1.0"
