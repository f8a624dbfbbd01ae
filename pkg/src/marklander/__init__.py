"""Desk-scale marker-landing sandbox.

A simulated flat world with a software-rendered downward camera, two landing
MDPs (landmark detection, vertical descent), a from-scratch DQN stack with a
reward-partitioned replay buffer, a finite-state machine chaining the phase
policies, an evaluation bench with scripted baselines, and a pilot service
for human sessions.
"""

__version__ = "0.1.0"
