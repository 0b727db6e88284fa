"""
Чтение и запись потоков JSON Lines.
"""
import json
import logging
from collections.abc import Iterable
from pathlib import Path
from typing import TypeVar

from pydantic import BaseModel, ValidationError

from app.exceptions import DataError, InputError
from app.schemas import SCHEMA_VERSION, FrameRecord

logger = logging.getLogger(__name__)

DocumentT = TypeVar("DocumentT", bound=BaseModel)


def _decode(line: str | bytes, lineno: int) -> str:
    if isinstance(line, str):
        return line
    try:
        return line.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise DataError(f"invalid UTF-8 at byte {exc.start}: {exc.reason}",
                        lineno) from exc


def parse_frames(lines: Iterable[str | bytes]) -> dict[str, list[FrameRecord]]:
    """
    Группирует кадры по sequence_id в порядке первого появления.
    Номера кадров в каждой последовательности должны идти 0, 1, 2, ...
    """
    sequences: dict[str, list[FrameRecord]] = {}
    for lineno, raw in enumerate(lines, start=1):
        line = _decode(raw, lineno)
        if not line.strip():
            continue
        try:
            record = FrameRecord.model_validate(json.loads(line))
        except json.JSONDecodeError as exc:
            raise DataError(f"invalid JSON: {exc.msg}", lineno) from exc
        except ValidationError as exc:
            raise DataError(f"invalid frame record: {exc.errors()[0]['msg']}",
                            lineno) from exc

        frames = sequences.setdefault(record.sequence_id, [])
        if record.index != len(frames):
            raise DataError(
                f"sequence {record.sequence_id!r}: expected frame index "
                f"{len(frames)}, got {record.index}", lineno)
        if frames and len(record.feature) != len(frames[0].feature):
            raise DataError(
                f"sequence {record.sequence_id!r}: feature dimension "
                f"{len(record.feature)} differs from {len(frames[0].feature)}",
                lineno)
        frames.append(record)
    return sequences


def read_frames(path: str | Path) -> dict[str, list[FrameRecord]]:
    with open(path, "rb") as fh:
        sequences = parse_frames(fh)
    logger.info("Read %d sequence(s) from %s", len(sequences), path)
    return sequences


def read_label_corpus(path: str | Path) -> list[list[str]]:
    """
    Последовательности меток из разметки; truth_label имеет приоритет.
    """
    return [[f.truth_label or f.label for f in frames]
            for frames in read_frames(path).values()]


def dump_record(record: BaseModel, **extra) -> str:
    payload = record.model_dump(mode="json")
    payload.update(extra)
    payload["schema_version"] = SCHEMA_VERSION
    return json.dumps(payload, ensure_ascii=False)


def write_records(path: str | Path, records: Iterable[BaseModel],
                  **extra) -> int:
    count = 0
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(dump_record(record, **extra) + "\n")
            count += 1
    return count


def write_frames(path: str | Path,
                 sequences: dict[str, list[FrameRecord]]) -> int:
    return write_records(path, (f for frames in sequences.values()
                                for f in frames))


def write_grouped(path: str | Path,
                  groups: Iterable[tuple[str, Iterable[BaseModel]]]) -> int:
    """
    Записи без собственного sequence_id получают его из группы.
    """
    count = 0
    with open(path, "w", encoding="utf-8") as fh:
        for sequence_id, records in groups:
            for record in records:
                fh.write(dump_record(record, sequence_id=sequence_id) + "\n")
                count += 1
    return count


def write_metadata(path: str | Path, **fields) -> None:
    payload = {"schema_version": SCHEMA_VERSION, **fields}
    Path(path).write_text(json.dumps(payload, indent=2, ensure_ascii=False),
                          encoding="utf-8")


def read_document(path: str | Path, model: type[DocumentT]) -> DocumentT:
    """
    Сохранённый JSON-документ. Ошибки чтения и формата дают InputError.
    """
    path = Path(path)
    try:
        return model.model_validate_json(path.read_bytes())
    except OSError as exc:
        raise InputError(f"Cannot read {path}: {exc.strerror or exc}") from exc
    except ValidationError as exc:
        raise InputError(f"{path.name}: invalid {model.__name__}: "
                         f"{exc.errors()[0]['msg']}") from exc
