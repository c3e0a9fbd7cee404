"""エラー定義 - 安定したコードを持つ例外クラス

各例外は対応する組み込み例外も継承するので、
`except ValueError` などでも捕捉できる。CLIは `code` を標準エラーに出す。
"""

from typing import Optional


class StrapError(Exception):
    """検索エンジン共通の基底例外"""
    code = "ERROR"


class MissingManifest(StrapError, FileNotFoundError):
    code = "MISSING_MANIFEST"


class SchemaViolation(StrapError, ValueError):
    code = "SCHEMA_VIOLATION"

    def __init__(self, field: str, message: str = ""):
        self.field = field
        super().__init__(f"manifest.jsonの不正なフィールド: {field} {message}".strip())


class ShapeMismatch(StrapError, ValueError):
    code = "SHAPE_MISMATCH"

    def __init__(self, trajectory_id: Optional[str], expected, found):
        self.trajectory_id = trajectory_id
        self.expected = expected
        self.found = found
        where = f"{trajectory_id}: " if trajectory_id else ""
        super().__init__(f"{where}形状不一致 (期待 {expected}, 実際 {found})")


class CorruptBinary(StrapError, ValueError):
    code = "CORRUPT_BINARY"

    def __init__(self, file: str, byte_offset: int):
        self.file = file
        self.byte_offset = byte_offset
        super().__init__(f"バイナリ破損: {file} (オフセット {byte_offset})")


class IoFailure(StrapError, OSError):
    code = "IO_FAILURE"

    def __init__(self, path, message: str = ""):
        self.path = path
        super().__init__(f"書き込み失敗: {path} {message}".strip())


class ValidationFailed(StrapError, ValueError):
    code = "VALIDATION_FAILED"

    def __init__(self, report):
        self.report = report
        codes = sorted({issue.code for issue in report.issues})
        super().__init__(f"検証エラー {len(report.issues)}件: {', '.join(codes)}")


class EmptyInput(StrapError, ValueError):
    code = "EMPTY_INPUT"


class TooShort(StrapError, ValueError):
    code = "TOO_SHORT"


class TooFewProprioColumns(StrapError, ValueError):
    code = "TOO_FEW_PROPRIO_COLUMNS"


class DimMismatch(StrapError, ValueError):
    code = "DIM_MISMATCH"


class ZeroVector(StrapError, ValueError):
    code = "ZERO_VECTOR"


class NonFinite(StrapError, ValueError):
    code = "NON_FINITE"


class SizeBound(StrapError, ValueError):
    code = "SIZE_BOUND"


class EmptyPrior(StrapError, ValueError):
    code = "EMPTY_PRIOR"


class EmptyTarget(StrapError, ValueError):
    code = "EMPTY_TARGET"


class StaleResult(StrapError, KeyError):
    code = "STALE_RESULT"

    def __str__(self) -> str:
        # KeyErrorはreprで包むのでメッセージをそのまま返す
        return str(self.args[0]) if self.args else self.code


class ConfigInvalid(StrapError, ValueError):
    code = "CONFIG_INVALID"


class UnknownId(StrapError, KeyError):
    code = "UNKNOWN_ID"

    def __str__(self) -> str:
        return str(self.args[0]) if self.args else self.code
