"""
Командная строка: run, synth, eval, rules.

Коды возврата: 0 успех, 1 ошибка использования, 2 ошибка данных,
3 внутренняя ошибка.
"""
import logging
import sys
from pathlib import Path

import click

from app.config import CONFIG_PATH, configure_logging, load_config
from app.exceptions import CognitionError, DataError, InputError, \
    RuleParseError
from app.pipeline import run_pipeline
from app.rule_dsl import default_rulebase, generate_default_rulebase, \
    load_rulebase, published_rules, serialize, validate
from app.streams import read_frames, read_label_corpus, write_frames, \
    write_grouped, write_metadata
from app.synth_eval import compare, flatten, format_report, generate, \
    load_synth_config, threshold_sweep, truth_of

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3

existing_file = click.Path(exists=True, dir_okay=False, path_type=Path)


@click.group()
@click.option("--log-config", type=click.Path(path_type=Path), default=None,
              help="ini-файл настроек логирования")
@click.option("-v", "--verbose", count=True, help="Подробнее: -v INFO, -vv DEBUG")
def cli(log_config: Path | None, verbose: int):
    """
    Оценка когнитивной эффективности и обновление потоков детекций.
    """
    level = {0: None, 1: logging.INFO}.get(verbose, logging.DEBUG)
    configure_logging(log_config, level)


@cli.command("run")
@click.argument("input_path", type=existing_file)
@click.option("-c", "--config", "config_path", type=existing_file,
              default=CONFIG_PATH, help="Файл настроек key = value")
@click.option("-o", "--output", "output_dir", type=click.Path(path_type=Path),
              default=Path("out"), show_default=True)
@click.option("--annotations", type=existing_file, default=None,
              help="Обучающая разметка для оценки NPMI")
@click.option("--delta", type=float, default=None)
@click.option("--lambda", "lam", type=int, default=None)
@click.option("--tau", type=float, default=None)
@click.option("--rule-file", type=existing_file, default=None)
@click.option("--update-mode", type=click.Choice(["batch", "sequential"]),
              default=None)
@click.option("--workers", type=int, default=None)
def cmd_run(input_path: Path, config_path: Path | None, output_dir: Path,
            annotations: Path | None, **overrides):
    """
    FCM и FCS над потоком INPUT_PATH (JSON Lines). Пишет cognition.jsonl,
    outcomes.jsonl и frames.jsonl в каталог вывода.
    """
    settings = load_config(config_path, **overrides)
    sequences = read_frames(input_path)
    if not sequences:
        raise DataError("no sequences")
    annotations = annotations or settings.annotations
    corpus = read_label_corpus(annotations) if annotations else None
    result = run_pipeline(sequences, settings, corpus)

    output_dir.mkdir(parents=True, exist_ok=True)
    write_grouped(output_dir / "cognition.jsonl",
                  ((s.sequence_id, s.cognition) for s in result.sequences))
    write_grouped(output_dir / "outcomes.jsonl",
                  ((s.sequence_id, s.outcomes) for s in result.sequences))
    write_frames(output_dir / "frames.jsonl", result.frames)
    write_metadata(output_dir / "run.json", settings=settings.model_dump(
        mode="json", by_alias=True), accepted=result.accepted,
        cooccurrence_source=result.cooccurrence_source)
    for sequence in result.sequences:
        for error in sequence.errors:
            click.echo(f"{sequence.sequence_id}: {error}", err=True)
    click.echo(f"{len(result.sequences)} sequence(s), {result.accepted} "
               f"update(s) accepted -> {output_dir}")


@cli.command("synth")
@click.option("-c", "--config", "config_path", type=existing_file, default=None)
@click.option("-o", "--output", "output_dir", type=click.Path(path_type=Path),
              default=Path("synth"), show_default=True)
@click.option("--seed", type=int, default=None)
@click.option("--flip-rate", type=float, default=None)
@click.option("--spur-rate", type=float, default=None)
@click.option("--num-sequences", type=int, default=None)
def cmd_synth(config_path: Path | None, output_dir: Path, **overrides):
    """
    Синтетический корпус: frames.jsonl (с ошибками и truth_label),
    truth.jsonl и annotations.jsonl.
    """
    cfg = load_synth_config(config_path, **overrides)
    corpus = generate(cfg)
    output_dir.mkdir(parents=True, exist_ok=True)
    write_frames(output_dir / "frames.jsonl", corpus.frames)
    write_frames(output_dir / "truth.jsonl", corpus.truth_frames)
    write_frames(output_dir / "annotations.jsonl", corpus.annotation_frames)
    click.echo(f"{len(corpus.frames)} sequence(s) -> {output_dir}")


@cli.command("eval")
@click.argument("before_path", type=existing_file)
@click.argument("after_path", type=existing_file)
@click.option("--truth", "truth_path", type=existing_file, default=None,
              help="Истинная разметка; по умолчанию truth_label из BEFORE")
@click.option("--tau", "taus", type=float, multiple=True,
              help="Пороги для перебора (повторяемый)")
@click.option("-c", "--config", "config_path", type=existing_file,
              default=CONFIG_PATH)
@click.option("--annotations", type=existing_file, default=None)
@click.option("--score", type=click.Choice(["confidence", "effectiveness"]),
              default="confidence", show_default=True)
@click.option("--json", "as_json", is_flag=True, help="Отчёт в JSON")
def cmd_eval(before_path: Path, after_path: Path, truth_path: Path | None,
             taus: tuple[float, ...], config_path: Path | None,
             annotations: Path | None, score: str, as_json: bool):
    """
    Сравнение потоков до и после обновления с истинной разметкой.
    """
    before_seq = read_frames(before_path)
    before, after = flatten(before_seq), flatten(read_frames(after_path))
    truth = flatten(read_frames(truth_path)) if truth_path else before
    labels = [f.truth_label or f.label for f in truth] if truth_path \
        else truth_of(before)

    sweep = []
    if taus:
        settings = load_config(config_path)
        corpus = read_label_corpus(annotations) if annotations else None
        sweep = threshold_sweep(before_seq, labels, settings, taus,
                                annotations=corpus)
    report = compare(before, after, labels, score, sweep)
    click.echo(report.model_dump_json(indent=2) if as_json
               else format_report(report))


@cli.group("rules")
def cmd_rules():
    """
    Работа с файлами правил .frl.
    """


@cmd_rules.command("validate")
@click.argument("path", type=existing_file)
@click.option("--strict", is_flag=True, help="Проверять покрытие 125 сочетаний")
def rules_validate(path: Path, strict: bool):
    try:
        diagnostics = validate(load_rulebase(path), strict)
    except RuleParseError as exc:
        diagnostics = exc.diagnostics
    for diagnostic in diagnostics:
        click.echo(f"{path}:{diagnostic}")
    if diagnostics:
        raise RuleParseError(diagnostics)
    click.echo(f"{path}: ok")


@cmd_rules.command("generate")
@click.option("--mu1", type=float, default=0.6, show_default=True)
@click.option("--mu2", type=float, default=0.2, show_default=True)
@click.option("--overrides", type=existing_file, default=None,
              help="Правила, заменяющие сгенерированные")
@click.option("--published", is_flag=True,
              help="Применить опубликованные примеры правил")
@click.option("-o", "--output", type=click.Path(path_type=Path), default=None)
def rules_generate(mu1: float, mu2: float, overrides: Path | None,
                   published: bool, output: Path | None):
    extra = list(published_rules()) if published else []
    if overrides:
        extra += list(load_rulebase(overrides))
    text = serialize(generate_default_rulebase(mu1, mu2, extra))
    if output:
        output.write_text(text, encoding="utf-8")
    else:
        click.echo(text, nl=False)


@cmd_rules.command("show")
@click.argument("path", type=existing_file, required=False)
def rules_show(path: Path | None):
    """
    Правила файла в каноническом виде. Без аргумента: база по умолчанию.
    """
    rulebase = load_rulebase(path) if path else default_rulebase()
    click.echo(serialize(rulebase), nl=False)


def main(argv: list[str] | None = None) -> int:
    try:
        code = cli.main(args=argv, prog_name="cognition",
                        standalone_mode=False)
    except click.exceptions.Abort:
        click.echo("Aborted.", err=True)
        return EXIT_USAGE
    except click.UsageError as exc:
        exc.show()
        return EXIT_USAGE
    except (DataError, InputError, RuleParseError) as exc:
        click.echo(f"error: {exc}", err=True)
        return EXIT_DATA
    except CognitionError as exc:
        click.echo(f"error: {exc}", err=True)
        return EXIT_INTERNAL
    except click.ClickException as exc:
        exc.show()
        return EXIT_USAGE
    except Exception as exc:
        logger.exception("Unexpected failure")
        click.echo(f"internal error: {exc}", err=True)
        return EXIT_INTERNAL
    return code if isinstance(code, int) else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
