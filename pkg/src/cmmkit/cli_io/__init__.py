"""Configuration, file formats and the ``cmmkit`` command line."""
