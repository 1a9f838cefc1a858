from __future__ import annotations

from enum import Enum, auto


class ModeSign(Enum):
    PLUS = auto()
    MINUS = auto()

    @property
    def sign(self) -> int:
        return 1 if self is ModeSign.PLUS else -1

    @property
    def other(self) -> ModeSign:
        return ModeSign.MINUS if self is ModeSign.PLUS else ModeSign.PLUS


class FlowMode(Enum):
    PLUS = auto()
    MINUS = auto()
    AVERAGED = auto()

    @classmethod
    def of(cls, mode: ModeSign | FlowMode) -> FlowMode:
        if isinstance(mode, FlowMode):
            return mode
        return cls.PLUS if mode is ModeSign.PLUS else cls.MINUS

    @property
    def mode_sign(self) -> ModeSign | None:
        if self is FlowMode.AVERAGED:
            return None
        return ModeSign.PLUS if self is FlowMode.PLUS else ModeSign.MINUS

    @property
    def sign(self) -> int:
        return {FlowMode.PLUS: 1, FlowMode.MINUS: -1, FlowMode.AVERAGED: 0}[self]


class Direction(Enum):
    FORWARD = auto()
    INVERSE = auto()


class LZMethod(Enum):
    MAGNUS = auto()
    ADAPTIVE = auto()


class TransferArgument(Enum):
    PRINTED = auto()
    GAP_SHIFTED = auto()


class Scenario(Enum):
    LZ_TABLE = "lz-table"
    ISOTROPIC_CROSSING = "isotropic-crossing"
    PLUS_CROSSING = "plus-crossing"
    CONVERGENCE = "convergence"
