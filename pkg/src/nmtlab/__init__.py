"""nmtlab: a desk-scale workbench for studying word order, lexical similarity,
and POS-feature fusion in toy neural machine translation models."""

__version__ = "0.1.0"
