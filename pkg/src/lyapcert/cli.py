"""Command-line front door.

Runs pipelines in-process by default; with --server it acts as a thin client
against a running service instance (`lyapcert serve`)."""

from __future__ import annotations

import json
import sys

import click

from .pipeline import EXIT_CONFIG, EXIT_NUMERICAL, run

MODES = ("certify", "guas", "simulate", "audit", "all")


@click.group()
def main():
    """Convergence certification toolkit."""


def _remote(server, mode, config, quiet):
    import httpx

    try:
        with open(config) as fh:
            payload = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        if not quiet:
            click.echo(f"config error: {exc}")
        return EXIT_CONFIG
    endpoint = mode if mode != "all" else "certify"
    try:
        resp = httpx.post(f"{server.rstrip('/')}/{endpoint}", json=payload, timeout=600.0)
    except httpx.HTTPError as exc:
        if not quiet:
            click.echo(f"server error: {exc}")
        return EXIT_NUMERICAL
    if resp.status_code == 422:
        if not quiet:
            click.echo(f"config error: {resp.json().get('detail')}")
        return EXIT_CONFIG
    if resp.status_code >= 500:
        if not quiet:
            click.echo(f"numerical failure: {resp.json().get('detail')}")
        return EXIT_NUMERICAL
    body = resp.json()
    if not quiet:
        click.echo(json.dumps(body["report"], indent=2, sort_keys=True))
    return int(body["exit_code"])


def _mode_command(mode):
    @main.command(name=mode)
    @click.option("--config", "config_path", required=True, type=click.Path())
    @click.option("--seed", type=int, default=None, help="override mc_seed")
    @click.option("--out", type=click.Path(), default=None, help="output directory")
    @click.option("--quiet", is_flag=True, default=False)
    @click.option("--server", default=None, help="delegate to a running service URL")
    def command(config_path, seed, out, quiet, server):
        if server:
            code = _remote(server, mode, config_path, quiet)
        else:
            code = run(config_path, mode, seed=seed, out=out, quiet=quiet)
        sys.exit(code)

    command.__doc__ = f"Run the {mode} pipeline."
    return command


for _mode in MODES:
    _mode_command(_mode)


@main.command()
@click.option("--host", default="127.0.0.1")
@click.option("--port", default=8000, type=int)
def serve(host, port):
    """Start the HTTP service."""
    import uvicorn

    from .api import app

    uvicorn.run(app, host=host, port=port)


if __name__ == "__main__":
    main()
