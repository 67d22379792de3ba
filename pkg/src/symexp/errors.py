"""Exception types shared across the package."""

from __future__ import annotations


class ContractError(ValueError):
    """A numeric or mathematical precondition of a computation does not hold."""


class BudgetError(ContractError):
    """An exact enumeration would exceed its configured size budget."""


class ProviderError(ContractError):
    """A derivative provider failed on a specific multiset of orders."""

    def __init__(self, orders: tuple[int, ...], cause: BaseException):
        self.orders = orders
        self.cause = cause
        super().__init__(f"derivative provider failed on orders {list(orders)}: {cause}")
