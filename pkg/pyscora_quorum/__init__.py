from . import params, crypto, selection, ledger, propagate, protocol, simnet, montecarlo, harness

__all__ = ['params', 'crypto', 'selection', 'ledger', 'propagate', 'protocol', 'simnet', 'montecarlo', 'harness']
