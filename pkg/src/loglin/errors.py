class ContractViolation(ValueError):
    """An operation was invoked with inputs that break its stated contract."""
