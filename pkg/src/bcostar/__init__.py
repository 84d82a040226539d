"""Behavioral cloning from observation with concurrent inverse-model training.

Subpackages map onto the layers of the library: ``mdp`` (tabular MDP core),
``envs`` (gridworld and mountain car), ``experts``, ``learners``,
``algorithms`` (BC, BCO, BCO*), ``theory`` (bounds and the sample-complexity
ODE) and ``harness`` (config-driven runs behind the ``bcostar`` CLI).
"""

__version__ = "0.1.0"
