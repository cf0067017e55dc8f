"""Reference-free tuning of genomic error-correction parameters.

Train a language model on sequencing reads, score candidate corrections by
perplexity, and hill-climb an error-correction tool's parameter to the
perplexity minimum; includes a synthetic-error harness for validating the
whole loop without a reference genome.
"""

__version__ = "0.1.0"
