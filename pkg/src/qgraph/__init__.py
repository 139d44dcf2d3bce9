"""Standing waves of the cubic NLS on small metric graphs and the bowtie DST."""

__version__ = "0.1.0"
