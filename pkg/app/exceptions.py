"""
Иерархия ошибок пакета.

CLI переводит их в коды возврата, HTTP-маршруты в HTTPException.
"""


class CognitionError(Exception):
    """
    Базовая ошибка оценки и обновления детекций.
    """


class InputError(CognitionError, ValueError):
    """
    Некорректное входное значение (нечисловое, вне диапазона, неверные веса).
    """


class ContractError(CognitionError):
    """
    Нарушено предусловие операции.
    """


class DimensionError(InputError):
    """
    Размерности векторов или матриц не совпадают.
    """


class UnknownLabelError(InputError):
    """
    Метка действия отсутствует в словаре модели.
    """

    def __init__(self, label: str):
        super().__init__(f"Unknown action label: {label!r}")
        self.label = label


class NoActiveRulesError(CognitionError):
    """
    Ни одно правило не сработало: агрегированное множество пустое.
    """


class NoCorrelatedFramesError(CognitionError):
    """
    Коррелированная последовательность пуста, повторная детекция невозможна.
    """


class RuleParseError(CognitionError):
    """
    Файл правил не разобран; содержит полный список диагностик.
    """

    def __init__(self, diagnostics):
        self.diagnostics = list(diagnostics)
        first = self.diagnostics[0] if self.diagnostics else None
        detail = f": line {first.line}: {first.message}" if first else ""
        super().__init__(
            f"{len(self.diagnostics)} rule diagnostic(s){detail}")


class DataError(CognitionError):
    """
    Повреждённая строка входного потока JSON Lines.
    """

    def __init__(self, message: str, line: int | None = None):
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)
        self.line = line


class FrameError(CognitionError):
    """
    Ошибка обработки конкретного кадра (индекс прикреплён).
    """

    def __init__(self, index: int, cause: Exception):
        super().__init__(f"frame {index}: {cause}")
        self.index = index
        self.cause = cause
