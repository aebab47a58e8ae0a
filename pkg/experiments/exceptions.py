"""
Errors raised while reading or writing experiment files
"""
from core.exceptions import GupError


class KittiParseError(GupError):
    """A KITTI label line could not be parsed"""

    def __init__(self, message, column=None, column_name=None, line_number=None):
        super().__init__(message)
        self.column = column
        self.column_name = column_name
        self.line_number = line_number

    def details(self):
        return {'column': self.column, 'column_name': self.column_name, 'line_number': self.line_number}


class CalibrationFileError(GupError):
    """A KITTI calibration file lacks a usable P2 row"""


class SchemaError(GupError):
    """A JSON document does not match the versioned result schema"""

    def __init__(self, message, errors=None):
        super().__init__(message)
        self.errors = errors or {}

    def details(self):
        return {'errors': self.errors}


class ConfigError(GupError):
    """A run configuration is invalid"""

    def __init__(self, message, errors=None):
        super().__init__(message)
        self.errors = errors or {}

    def details(self):
        return {'errors': self.errors}
