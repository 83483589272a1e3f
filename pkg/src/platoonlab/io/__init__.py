"""Scenario files, CSV/SVG output and run bundles."""
from platoonlab.io.scenario import (ScenarioFile, ScenarioParseError, ScenarioValidationError,
                                    bundled_names, load_scenario, validate_scenario)

__all__ = ["ScenarioFile", "ScenarioParseError", "ScenarioValidationError", "bundled_names",
           "load_scenario", "validate_scenario"]
