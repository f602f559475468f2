"""Store buffer reduction: a TSO machine, a sequentially consistent virtual
machine with an ownership discipline, and an explicit-state checker relating them."""

__version__ = "0.1.0"
