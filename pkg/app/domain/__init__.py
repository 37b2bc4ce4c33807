"""Domain layer - core entities, interfaces and exceptions.

This layer contains:
- Domain entities (frames, poses, world states, trajectories)
- Repository interfaces
- Rollout model interface (Strategy Pattern)
- Exception hierarchy
"""
