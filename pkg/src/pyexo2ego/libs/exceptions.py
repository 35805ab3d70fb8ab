#!/usr/bin/env python3
"""
PYEXO2EGO: Parallel GAN for exocentric to egocentric view generation,
with synthetic paired-view data and a full evaluation metric suite.

This module provides the foundation for consistent error handling across
the application.

Copyright 2024 © Thierry Thiers <webcoder31@gmail.com>
License: CeCILL-C (http://www.cecill.info)
Repository: https://github.com/webcoder31/pyexo2ego
"""


class AppBaseException(Exception):
    """
    Base exception class for all PYEXO2EGO application errors.

    This class serves as the root of the exception hierarchy for the
    application, providing a consistent interface for error handling.

    Inheritance Pattern:
    ```
    Exception
        └── AppBaseException
            ├── AutodiffException
            ├── NetsException
            ├── DatasetException
            ├── TrainingException
            ├── ConfigException
            └── ... (other module-specific exceptions)
    ```

    Attributes:
        exit_code (int): Process exit code the CLI uses when this error
            aborts a command (1 = runtime failure).

    Note:
        All application-specific exceptions should inherit from this class
        to ensure consistent error handling and reporting throughout the
        application.
    """

    exit_code: int = 1


    def __init__(self, message: str):
        """
        Initialize exception with message.

        Args:
            message (str): Main error message to display
        """
        self.message = message
        super().__init__(self.__str__())


    def __str__(self) -> str:
        """
        Format error message.

        Returns:
            str: Formatted error message
        """

        return self.message


class ConfigException(AppBaseException):
    """
    Exception raised for invalid user configuration.

    Covers unknown or ill-typed config keys, missing dataset paths and
    values rejected by validation (e.g. a resolution the network depth
    cannot handle). The CLI maps it to exit code 2 (usage/config error).
    """

    exit_code = 2
