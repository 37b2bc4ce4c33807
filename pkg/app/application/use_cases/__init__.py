"""Use cases - application-specific business logic."""
from app.application.use_cases.gradient_check_use_case import GradientCheckReport, GradientCheckUseCase
from app.application.use_cases.selftest_use_case import SelfTestReport, SelfTestUseCase

__all__ = [
    "GradientCheckReport",
    "GradientCheckUseCase",
    "SelfTestReport",
    "SelfTestUseCase",
]
