from typing import (
    Callable,
    Generic,
    TypeVar
)

from loguru import logger

ArgumentType = TypeVar('ArgumentType')


class Callback(Generic[ArgumentType]):
    def __init__(self, every: int = 1) -> None:
        """
        Create a new Callback object

        :param every: Only every n-th call is forwarded to the registered callables
        """
        self.every = max(1, every)
        self._count = 0
        self._callback_list: list[Callable[[ArgumentType], None]] = []

    def __call__(self, argument: ArgumentType, force: bool = False) -> None:
        """
        Call all callables that have been registered

        :param argument: The argument passed to the callbacks
        :param force: Forward the call even when it is not an n-th call
        """
        due = force or self._count % self.every == 0
        self._count += 1
        if not due:
            return

        for callback in self._callback_list:
            try:
                callback(argument)
            except Exception as e:
                logger.exception(e)
                raise

    def __len__(self) -> int:
        return len(self._callback_list)

    def __bool__(self) -> bool:
        return len(self) > 0

    def register(self, callback: Callable[[ArgumentType], None]) -> None:
        """
        Register a callable to be called when this callback is called

        :param callback: The callable to be registered
        """
        self._callback_list.append(callback)
