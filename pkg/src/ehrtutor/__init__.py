"""EHRTutor: a conversational engine that quizzes patients on discharge instructions."""

__version__ = "0.1.0"
