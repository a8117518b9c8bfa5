"""sqlsight: predict properties of SQL queries before they run.

The package mines a query workload (a log of SQL statements with outcome
labels) and trains models that map raw statement text to predicted
error class, CPU time, answer size, or session class.
"""

__version__ = "0.1.0"
