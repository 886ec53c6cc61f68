"""coursebot: a chat-platform-agnostic course-interaction bot with a
simulated guild, attendance checks, activity surveys, weekly automation,
and learning analytics."""

__version__ = "0.1.0"
