"""Joint bandwidth-limitation and chromatic-dispersion pre-compensation for
IM/DD OOK links, with a simulated link and receiver DSP."""

__version__ = "0.1.0"
