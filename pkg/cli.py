"""
lmrec command line
==================
    python cli.py prepare   --ratings ml-1m/ratings.dat --movies ml-1m/movies.dat
    python cli.py mine      --movies ml-1m/movies.dat --corpus comments.txt --top-k 50
    python cli.py train-bpr --ratings ... --movies ...
    python cli.py eval      --scorer ngram --corpus corpus.txt [--sweep context]
    python cli.py sweep     --scorer remote --endpoint http://127.0.0.1:8000
    python cli.py complete  --scorer remote --user 42

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
"""

import logging
from contextlib import contextmanager
from pathlib import Path
from typing import Annotated, Callable, Dict, List, Optional, Sequence

import typer
from dotenv import load_dotenv
from pydantic import ValidationError
from rich.console import Console
from rich.logging import RichHandler
from rich.markup import escape
from rich.table import Table

from app.errors import ConfigError, LmrecError, UnknownEntityError, UnsupportedOperationError
from app.services import bpr, evaluation, mining, reporting
from app.services.dataset import PreparedDataset, load_items, load_ratings, prepare_dataset, write_instances
from app.services.ngram import fit_ngram, load_ngram
from app.services.prompt import get_template, load_templates, render_generation_prompt, shuffle_context
from app.services.remote_client import RemoteScorer
from app.services.run_config import require_inputs, resolve_run_config, write_run_config
from app.services.scorer import NgramScorer, PopularityScorer, RandomScorer, Scorer, generate
from models.eval_models import SweepRow
from models.prompt_models import PromptTemplate
from models.run_models import RunConfig, ScorerKind, SweepKind

logger = logging.getLogger("lmrec")

app = typer.Typer(add_completion=False, no_args_is_help=True, help="Zero-shot LM recommendation toolkit")
console = Console(soft_wrap=True)
err_console = Console(stderr=True, soft_wrap=True)

EXIT_RUNTIME = 1
EXIT_CONFIG = 2

INSTANCES_FILE = "instances.jsonl"
STATS_FILE = "stats.txt"
PATTERNS_FILE = "patterns.tsv"
BPR_MODEL_FILE = "bpr_model.npz"
REPORT_FILE = "report.tsv"
PER_USER_FILE = "per_user.tsv"
SUMMARY_FILE = "summary.txt"
MODELS_FILE = "models.tsv"

# ── Shared options ───────────────────────────────────────────────────────────

ConfigOpt = Annotated[Optional[Path], typer.Option("--config", "-c", help="flat key = value config file")]
SeedOpt = Annotated[Optional[int], typer.Option("--seed", help="global seed (dataset and BPR)")]
OutDirOpt = Annotated[Optional[Path], typer.Option("--out-dir", help="output directory (created if absent)")]
ScorerOpt = Annotated[Optional[ScorerKind], typer.Option("--scorer", help="relevance backend")]
TemplateOpt = Annotated[Optional[str], typer.Option("--template", help="prompt template name")]
EndpointOpt = Annotated[Optional[str], typer.Option("--endpoint", help="remote scoring endpoint (env LMREC_ENDPOINT)")]
ModelIdOpt = Annotated[Optional[str], typer.Option("--model-id", help="remote model identifier")]
StrictOpt = Annotated[Optional[bool], typer.Option("--strict/--lenient", help="fail on, or skip and report, unscorable users")]
RatingsOpt = Annotated[Optional[Path], typer.Option("--ratings", help="ratings.dat or ratings.csv")]
MoviesOpt = Annotated[Optional[Path], typer.Option("--movies", help="movies.dat or movies.csv")]
CorpusOpt = Annotated[Optional[Path], typer.Option("--corpus", help="text corpus, or a saved n-gram model (.json)")]
VerboseOpt = Annotated[bool, typer.Option("--verbose", "-v", help="debug logging")]


def setup_logging(verbose: bool) -> None:
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(message)s",
        datefmt="[%X]",
        handlers=[RichHandler(console=err_console, show_path=False, rich_tracebacks=False)],
        force=True,
    )


@contextmanager
def cli_errors():
    """Map library errors to exit codes."""
    try:
        yield
    except (ConfigError, ValidationError) as exc:
        err_console.print(f"[red]configuration error:[/red] {escape(str(exc))}")
        raise typer.Exit(EXIT_CONFIG)
    except FileNotFoundError as exc:
        err_console.print(f"[red]file not found:[/red] {escape(str(exc.filename or exc))}")
        raise typer.Exit(EXIT_CONFIG)
    except UnsupportedOperationError as exc:
        err_console.print(f"[red]unsupported operation:[/red] {escape(str(exc))}")
        raise typer.Exit(EXIT_RUNTIME)
    except (LmrecError, OSError) as exc:
        err_console.print(f"[red]error:[/red] {escape(str(exc))}")
        raise typer.Exit(EXIT_RUNTIME)


def load_config(
    config: Optional[Path],
    verbose: bool,
    required: Sequence[str] = (),
    check: Optional[Callable[[RunConfig], None]] = None,
    **flags,
) -> RunConfig:
    """Resolve and validate; nothing is written for a run that is rejected here."""
    setup_logging(verbose)
    # LMREC_ENDPOINT / LMREC_API_KEY may come from a local .env; real env vars win
    load_dotenv(Path.cwd() / ".env")
    cfg = resolve_run_config(config, flags)
    require_inputs(cfg, *required)
    if cfg.templates_path is not None:
        require_inputs(cfg, "templates_path")
    if check is not None:
        check(cfg)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    write_run_config(cfg)
    return cfg


# ── Pipeline helpers ─────────────────────────────────────────────────────────

def load_dataset(cfg: RunConfig) -> PreparedDataset:
    require_inputs(cfg, "ratings_path", "movies_path")
    ratings = load_ratings(cfg.ratings_path)
    items = load_items(cfg.movies_path, foreign_articles=cfg.dataset.foreign_articles)
    return prepare_dataset(ratings, items, cfg.dataset)


def custom_templates(cfg: RunConfig) -> List[PromptTemplate]:
    if cfg.templates_path is None:
        return []
    require_inputs(cfg, "templates_path")
    return load_templates(cfg.templates_path.read_text(encoding="utf-8"))


DATA_INPUTS = ("ratings_path", "movies_path")
DEFAULT_SWEEPS = [SweepKind.TEMPLATES, SweepKind.CONTEXT, SweepKind.USERS]
MODELS_SWEEP_USAGE = "the models sweep needs --scorer remote and --models id1,id2,..."


def sweep_model_ids(cfg: RunConfig) -> List[str]:
    return [m.strip() for m in cfg.models.split(",") if m.strip()]


def backend_check(sweeps: Sequence[SweepKind] = ()) -> Callable[[RunConfig], None]:
    """What the chosen backend and sweeps need, checked before anything is written."""

    def check(cfg: RunConfig) -> None:
        if cfg.scorer == ScorerKind.NGRAM:
            require_inputs(cfg, "corpus_path")
        if SweepKind.MODELS in sweeps and (cfg.scorer != ScorerKind.REMOTE or not sweep_model_ids(cfg)):
            raise ConfigError(MODELS_SWEEP_USAGE)

    return check


def require_remote(cfg: RunConfig) -> None:
    if cfg.scorer != ScorerKind.REMOTE:
        raise UnsupportedOperationError(f"completion needs --scorer remote, not {cfg.scorer.value}")


def build_backend(cfg: RunConfig, dataset: Optional[PreparedDataset] = None, kind: Optional[ScorerKind] = None) -> Scorer:
    kind = kind or cfg.scorer
    if kind == ScorerKind.REMOTE:
        return RemoteScorer(cfg.remote)
    if kind == ScorerKind.RANDOM:
        return RandomScorer(cfg.seed)
    if kind == ScorerKind.POPULARITY:
        if dataset is None:
            raise ConfigError("the popularity scorer needs the prepared dataset")
        return PopularityScorer(dataset.train_profiles)

    require_inputs(cfg, "corpus_path")
    if cfg.corpus_path.suffix == ".json":
        model = load_ngram(cfg.corpus_path)
    else:
        lines = mining.read_corpus_lines(cfg.corpus_path, cfg.mining.column, cfg.mining.delimiter)
        model = fit_ngram(lines, cfg.ngram.order, cfg.ngram.weights, cfg.ngram.unk_count)
    return NgramScorer(model)


def backend_details(cfg: RunConfig, backend: Scorer) -> Dict[str, object]:
    details: Dict[str, object] = {"scorer": backend.backend_id, "template": cfg.template, "seed": cfg.seed}
    if isinstance(backend, RemoteScorer):
        details["endpoint"] = cfg.remote.endpoint
        details["model_id"] = cfg.remote.model_id
    return details


def print_rows(title: str, rows: Sequence[SweepRow]) -> None:
    table = Table(title=title)
    for column in ("param", "MAP@1", "95% CI", "ties", "users", "scorer"):
        table.add_column(column)
    for cells in reporting.rows_table(rows):
        table.add_row(*cells)
    console.print(table)


def run_sweep(kind: SweepKind, cfg: RunConfig, dataset: PreparedDataset, backend: Scorer) -> List[SweepRow]:
    settings = cfg.sweep
    templates = custom_templates(cfg)
    template = get_template(cfg.template, templates)

    if kind == SweepKind.TEMPLATES:
        chosen = [get_template(name, templates) for name in settings.templates]
        rows = evaluation.compare_templates(backend, dataset, chosen, cfg.seed, settings)
    elif kind == SweepKind.CONTEXT:
        rows = evaluation.sweep_context_size(
            backend, dataset, cfg.dataset, settings.context_sizes, template, cfg.seed, settings
        )
    elif kind == SweepKind.USERS:
        titles = evaluation.catalog_titles(dataset)
        baselines = [(backend.backend_id, evaluation.lm_relevance(backend, template, titles, cfg.seed, settings.per_token))]
        rows = evaluation.sweep_train_users(dataset, settings.user_counts, cfg.bpr, baselines, cfg.seed, settings)
    else:
        model_ids = sweep_model_ids(cfg)
        if cfg.scorer != ScorerKind.REMOTE or not model_ids:
            raise ConfigError(MODELS_SWEEP_USAGE)
        backends = [RemoteScorer(cfg.remote.model_copy(update={"model_id": m})) for m in model_ids]
        rows = evaluation.sweep_models(backends, dataset, template, cfg.seed, settings)

    path = cfg.out_dir / reporting.FIGURE_FILES.get(kind.value, MODELS_FILE)
    reporting.write_sweep_rows(rows, path)
    print_rows(f"{kind.value} sweep -> {path}", rows)
    return rows


# ==========================================
# COMMANDS
# ==========================================

@app.command()
def prepare(
    config: ConfigOpt = None,
    ratings: RatingsOpt = None,
    movies: MoviesOpt = None,
    seed: SeedOpt = None,
    out_dir: OutDirOpt = None,
    verbose: VerboseOpt = False,
):
    """Binarize, filter and split ratings; write eval instances and dataset stats."""
    with cli_errors():
        cfg = load_config(
            config, verbose, required=DATA_INPUTS,
            ratings_path=ratings, movies_path=movies, seed=seed, out_dir=out_dir,
        )
        dataset = load_dataset(cfg)
        write_instances(dataset.instances, cfg.out_dir / INSTANCES_FILE)
        stats = reporting.stats_summary(dataset.stats)
        reporting.write_summary(stats, cfg.out_dir / STATS_FILE)
        logger.info(f"[dataset] rating histogram: {dict(sorted(dataset.stats.rating_histogram.items()))}")

        table = Table(title="dataset")
        table.add_column("stat")
        table.add_column("value", justify="right")
        for key, value in stats.items():
            table.add_row(key, str(value))
        console.print(table)
        console.print(f"filtered_users = {dataset.stats.filtered_users}")
        console.print(f"wrote {len(dataset.instances)} instances to {cfg.out_dir / INSTANCES_FILE}")


@app.command()
def mine(
    config: ConfigOpt = None,
    movies: MoviesOpt = None,
    corpus: CorpusOpt = None,
    top_k: Annotated[Optional[int], typer.Option("--top-k", help="rows to keep (default 50)")] = None,
    column: Annotated[Optional[int], typer.Option("--column", help="field index of a delimited dump")] = None,
    min_tokens: Annotated[Optional[int], typer.Option("--min-tokens", help="shortest indexed title")] = None,
    out_dir: OutDirOpt = None,
    verbose: VerboseOpt = False,
):
    """Count 3-6 token patterns around catalog titles in a text corpus."""
    with cli_errors():
        cfg = load_config(
            config, verbose, required=("movies_path", "corpus_path"),
            movies_path=movies, corpus_path=corpus, out_dir=out_dir,
            **{"mining.top_k": top_k, "mining.column": column, "mining.min_tokens": min_tokens},
        )
        settings = cfg.mining
        stop_titles = mining.DEFAULT_STOP_TITLES
        if settings.stop_titles_path is not None:
            stop_titles = [t for t in Path(settings.stop_titles_path).read_text(encoding="utf-8").splitlines() if t.strip()]
        items = load_items(cfg.movies_path, foreign_articles=cfg.dataset.foreign_articles)
        matcher = mining.build_matcher(items, settings.min_tokens, stop_titles)

        lines = mining.read_corpus_lines(cfg.corpus_path, settings.column, settings.delimiter, settings.chunk_size)
        tagged = mining.tag_corpus(lines, matcher)
        patterns = mining.count_patterns_chunked(
            mining.chunk_lines(tagged, settings.chunk_size), settings.n_min, settings.n_max, settings.max_workers
        )[:settings.top_k]
        if not patterns:
            logger.warning("[mining] no corpus line mentions a catalog title; pattern table is empty")
        mining.write_pattern_table(patterns, cfg.out_dir / PATTERNS_FILE)

        table = Table(title=f"top {len(patterns)} patterns")
        table.add_column("pattern")
        table.add_column("count", justify="right")
        for pattern in patterns[:20]:
            table.add_row(pattern.text, str(pattern.count))
        console.print(table)


@app.command("train-bpr")
def train_bpr(
    config: ConfigOpt = None,
    ratings: RatingsOpt = None,
    movies: MoviesOpt = None,
    d: Annotated[Optional[int], typer.Option("--d", help="latent dimension")] = None,
    epochs: Annotated[Optional[int], typer.Option("--epochs")] = None,
    learning_rate: Annotated[Optional[float], typer.Option("--learning-rate")] = None,
    model: Annotated[Optional[Path], typer.Option("--model", help="artifact path (default out_dir/bpr_model.npz)")] = None,
    seed: SeedOpt = None,
    out_dir: OutDirOpt = None,
    verbose: VerboseOpt = False,
):
    """Train BPR on training users plus test-user contexts; save the factors."""
    with cli_errors():
        cfg = load_config(
            config, verbose, required=DATA_INPUTS,
            ratings_path=ratings, movies_path=movies, model_path=model, seed=seed, out_dir=out_dir,
            **{"bpr.d": d, "bpr.epochs": epochs, "bpr.learning_rate": learning_rate},
        )
        dataset = load_dataset(cfg)
        candidates = sorted({c for i in dataset.instances for c in i.candidate_ids})
        profiles = list(dataset.train_profiles) + evaluation.context_profiles(dataset.instances)
        factors = bpr.train(profiles, cfg.bpr, extra_items=candidates)
        path = cfg.model_path or cfg.out_dir / BPR_MODEL_FILE
        bpr.save_model(factors, path)

        report = evaluation.evaluate(
            evaluation.bpr_relevance(factors), dataset.instances,
            bootstrap_samples=cfg.sweep.bootstrap_samples, seed=cfg.seed,
        )
        final = factors.history[-1][1] if factors.history else float("nan")
        console.print(f"final mean ln sigma(x) = {final:.6f}")
        console.print(f"held-out MAP@1 = {report.map_at_1:.4f} over {report.n_users} users")
        console.print(f"model saved to {path}")


@app.command("eval")
def eval_cmd(
    config: ConfigOpt = None,
    ratings: RatingsOpt = None,
    movies: MoviesOpt = None,
    corpus: CorpusOpt = None,
    scorer: ScorerOpt = None,
    template: TemplateOpt = None,
    endpoint: EndpointOpt = None,
    model_id: ModelIdOpt = None,
    strict: StrictOpt = None,
    sweep: Annotated[Optional[SweepKind], typer.Option("--sweep", help="run a sweep instead of a single report")] = None,
    sizes: Annotated[Optional[str], typer.Option("--sizes", help="context sizes, e.g. 0,1,2,5")] = None,
    user_counts: Annotated[Optional[str], typer.Option("--user-counts", help="e.g. 10,50,all")] = None,
    templates: Annotated[Optional[str], typer.Option("--templates", help="template names to compare")] = None,
    per_token: Annotated[Optional[bool], typer.Option("--per-token/--total", help="length-normalize scores")] = None,
    workers: Annotated[Optional[int], typer.Option("--workers", help="instances scored concurrently")] = None,
    seed: SeedOpt = None,
    out_dir: OutDirOpt = None,
    verbose: VerboseOpt = False,
):
    """MAP@1 of one scorer and template, or one sweep with --sweep."""
    with cli_errors():
        cfg = load_config(
            config, verbose,
            required=DATA_INPUTS, check=backend_check([sweep] if sweep is not None else []),
            ratings_path=ratings, movies_path=movies, corpus_path=corpus,
            scorer=scorer, template=template, seed=seed, out_dir=out_dir,
            **{
                "remote.endpoint": endpoint,
                "remote.model_id": model_id,
                "sweep.lenient": None if strict is None else not strict,
                "sweep.context_sizes": sizes,
                "sweep.user_counts": user_counts,
                "sweep.templates": templates,
                "sweep.per_token": per_token,
                "sweep.max_workers": workers,
            },
        )
        dataset = load_dataset(cfg)
        backend = build_backend(cfg, dataset)
        if sweep is not None:
            run_sweep(sweep, cfg, dataset, backend)
            return

        chosen = get_template(cfg.template, custom_templates(cfg))
        relevance_fn = evaluation.lm_relevance(
            backend, chosen, evaluation.catalog_titles(dataset), cfg.seed, cfg.sweep.per_token
        )
        report = evaluation.evaluate(
            relevance_fn, dataset.instances,
            lenient=cfg.sweep.lenient,
            bootstrap_samples=cfg.sweep.bootstrap_samples,
            seed=cfg.seed,
            max_workers=cfg.sweep.max_workers,
        )
        row = SweepRow.from_report(chosen.name, report, backend.backend_id, cfg.seed)
        reporting.write_sweep_rows([row], cfg.out_dir / REPORT_FILE)
        reporting.write_per_user(report, cfg.out_dir / PER_USER_FILE)
        reporting.write_summary(
            reporting.report_summary(report, backend_details(cfg, backend)), cfg.out_dir / SUMMARY_FILE
        )
        for user_id, reason in report.excluded:
            err_console.print(f"[yellow]excluded user {user_id}:[/yellow] {escape(reason)}")
        print_rows("MAP@1", [row])


@app.command()
def sweep(
    config: ConfigOpt = None,
    ratings: RatingsOpt = None,
    movies: MoviesOpt = None,
    corpus: CorpusOpt = None,
    scorer: ScorerOpt = None,
    template: TemplateOpt = None,
    endpoint: EndpointOpt = None,
    model_id: ModelIdOpt = None,
    strict: StrictOpt = None,
    kind: Annotated[Optional[List[SweepKind]], typer.Option("--kind", help="sweep(s) to run (default: templates, context, users)")] = None,
    models: Annotated[Optional[str], typer.Option("--models", help="remote model ids for the models sweep")] = None,
    seed: SeedOpt = None,
    out_dir: OutDirOpt = None,
    verbose: VerboseOpt = False,
):
    """Run the figure sweeps and write one TSV per sweep."""
    with cli_errors():
        cfg = load_config(
            config, verbose,
            required=DATA_INPUTS, check=backend_check(kind or DEFAULT_SWEEPS),
            ratings_path=ratings, movies_path=movies, corpus_path=corpus,
            scorer=scorer, template=template, seed=seed, out_dir=out_dir, models=models,
            **{
                "remote.endpoint": endpoint,
                "remote.model_id": model_id,
                "sweep.lenient": None if strict is None else not strict,
            },
        )
        dataset = load_dataset(cfg)
        backend = build_backend(cfg, dataset)
        for sweep_kind in kind or DEFAULT_SWEEPS:
            run_sweep(sweep_kind, cfg, dataset, backend)


@app.command()
def complete(
    config: ConfigOpt = None,
    ratings: RatingsOpt = None,
    movies: MoviesOpt = None,
    scorer: ScorerOpt = None,
    template: TemplateOpt = None,
    endpoint: EndpointOpt = None,
    model_id: ModelIdOpt = None,
    prompt: Annotated[Optional[str], typer.Option("--prompt", help="prompt text")] = None,
    user: Annotated[Optional[int], typer.Option("--user", help="build the prompt from this test user's context")] = None,
    max_tokens: Annotated[int, typer.Option("--max-tokens")] = 32,
    seed: SeedOpt = None,
    out_dir: OutDirOpt = None,
    verbose: VerboseOpt = False,
):
    """Greedy completion from the remote model, post-processed into catalog items."""
    with cli_errors():
        if (prompt is None) == (user is None):
            raise ConfigError("give exactly one of --prompt or --user")
        cfg = load_config(
            config, verbose,
            required=DATA_INPUTS if user is not None else ("movies_path",), check=require_remote,
            ratings_path=ratings, movies_path=movies, scorer=scorer, template=template, seed=seed, out_dir=out_dir,
            **{"remote.endpoint": endpoint, "remote.model_id": model_id},
        )
        items = load_items(cfg.movies_path, foreign_articles=cfg.dataset.foreign_articles)
        titles = {item.item_id: item.display_title for item in items}

        if user is not None:
            dataset = load_dataset(cfg)
            instance = next((i for i in dataset.instances if i.user_id == user), None)
            if instance is None:
                raise UnknownEntityError("test user", user)
            context = shuffle_context(list(instance.context_items), cfg.seed, user)
            chosen = get_template(cfg.template, custom_templates(cfg))
            prompt = render_generation_prompt(chosen, [titles[i] for i in context])

        backend = build_backend(cfg)
        completion = generate(backend, prompt, max_tokens, greedy=True)
        found = mining.extract_items(completion, mining.build_matcher(items, cfg.mining.min_tokens))

        console.print(f"[bold]prompt:[/bold] {escape(prompt)}")
        console.print(f"[bold]completion:[/bold] {escape(completion)}")
        if found:
            for item_id in found:
                console.print(f"  {item_id}\t{escape(titles[item_id])}")
        else:
            console.print("no catalog items found in the completion")


if __name__ == "__main__":
    app()
