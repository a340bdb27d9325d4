"""Experiment server - Flask API to launch harness runs and browse stored results."""
import os
import sys
import traceback
from datetime import datetime
from threading import Lock, Thread

from flask import Flask, jsonify, request
from dotenv import load_dotenv

# Load environment variables
load_dotenv()

from avalanche.errors import AvalancheError
from avalanche.experiments import DEFAULTS, execute
from avalanche.results import SCHEMA_VERSION, RunStore, dumps

PORT = int(os.getenv('AVALANCHE_PORT', 5000))


def create_app(store: RunStore = None) -> Flask:
    """Build the API around ``store`` (the default results directory if omitted)."""
    app = Flask(__name__)
    app.config['RUN_STORE'] = store or RunStore()
    # run_id -> {'state', 'subcommand', 'started', 'finished', 'error'}
    jobs = {}
    jobs_lock = Lock()

    def run_job(run_id: str, subcommand: str, parameters: dict):
        try:
            record = execute(subcommand, parameters)
            record.run_id = run_id
            app.config['RUN_STORE'].save(record)
            state, error = 'done', None
            print(f"[RUN] {run_id} finished in {record.wall_time:.2f}s", file=sys.stderr)
        except (AvalancheError, ValueError, TypeError, KeyError) as e:
            state, error = 'failed', f'{type(e).__name__}: {e}'
            print(f"[ERROR] Run {run_id} failed: {error}", file=sys.stderr)
        except Exception as e:
            state, error = 'failed', f'{type(e).__name__}: {e}'
            print(f"[ERROR] Run {run_id} crashed: {error}", file=sys.stderr)
            traceback.print_exc()
        with jobs_lock:
            jobs[run_id].update(state=state, error=error, finished=datetime.now().isoformat())

    @app.route('/api/health')
    def health():
        """Health check endpoint."""
        with jobs_lock:
            running = sum(1 for job in jobs.values() if job['state'] == 'running')
        return jsonify({
            'status': 'ok',
            'timestamp': datetime.now().isoformat(),
            'running': running,
            'schema_version': SCHEMA_VERSION,
            'subcommands': sorted(DEFAULTS),
        })

    @app.route('/api/runs', methods=['GET'])
    def list_runs():
        """Headers of every stored run."""
        return jsonify(app.config['RUN_STORE'].list_runs())

    @app.route('/api/runs', methods=['POST'])
    def start_run():
        """Launch a subcommand in the background; returns its run id."""
        data = request.get_json(silent=True)
        if not data:
            return jsonify({'success': False, 'error': 'No data provided'}), 400
        subcommand = data.get('subcommand')
        parameters = data.get('parameters') or {}
        if subcommand not in DEFAULTS:
            return jsonify({'success': False, 'error': f'Unknown subcommand: {subcommand}'}), 400
        if not isinstance(parameters, dict):
            return jsonify({'success': False, 'error': 'parameters must be an object'}), 400
        unknown = sorted(set(parameters) - set(DEFAULTS[subcommand]) - {'seed', 'workers'})
        if unknown:
            return jsonify({'success': False, 'error': f'Unknown parameters: {", ".join(unknown)}'}), 400

        with jobs_lock:
            run_id = app.config['RUN_STORE'].new_id(subcommand)
            while run_id in jobs:
                run_id = f'{run_id}-x'
            jobs[run_id] = {'state': 'running', 'subcommand': subcommand,
                            'started': datetime.now().isoformat(), 'finished': None, 'error': None}
        print(f"[RUN] Starting {subcommand} as {run_id}", file=sys.stderr)
        Thread(target=run_job, args=(run_id, subcommand, parameters), daemon=True).start()
        return jsonify({'success': True, 'run_id': run_id, 'state': 'running'}), 202

    @app.route('/api/runs/<run_id>', methods=['GET'])
    def get_run(run_id):
        """Full stored record, payload included."""
        try:
            record = app.config['RUN_STORE'].load(run_id)
        except ValueError as e:
            return jsonify({'success': False, 'error': str(e)}), 400
        if record is None:
            return jsonify({'success': False, 'error': 'Run not found'}), 404
        return app.response_class(dumps(record.to_dict()), mimetype='application/json')

    @app.route('/api/runs/<run_id>', methods=['DELETE'])
    def delete_run(run_id):
        try:
            deleted = app.config['RUN_STORE'].delete(run_id)
        except ValueError as e:
            return jsonify({'success': False, 'error': str(e)}), 400
        if not deleted:
            return jsonify({'success': False, 'error': 'Run not found'}), 404
        with jobs_lock:
            jobs.pop(run_id, None)
        return jsonify({'success': True})

    @app.route('/api/runs/<run_id>/status')
    def run_status(run_id):
        with jobs_lock:
            job = dict(jobs[run_id]) if run_id in jobs else None
        if job is not None:
            return jsonify({'run_id': run_id, **job})
        try:
            record = app.config['RUN_STORE'].load(run_id)
        except ValueError as e:
            return jsonify({'success': False, 'error': str(e)}), 400
        if record is None:
            return jsonify({'success': False, 'error': 'Run not found'}), 404
        return jsonify({'run_id': run_id, 'state': 'done', 'subcommand': record.subcommand,
                        'started': record.created, 'finished': record.created, 'error': None})

    return app


def serve(port: int = PORT, store: RunStore = None):
    app = create_app(store)
    print("=" * 50)
    print("Avalanche Experiment Server")
    print("=" * 50)
    print(f"\nStarting server on http://localhost:{port}")
    print(f"Results directory: {app.config['RUN_STORE'].directory}")
    print("\nCopy config.example.env to .env to change seeds, budgets and workers.")
    print("\n" + "=" * 50)
    app.run(host='0.0.0.0', port=port, debug=False, use_reloader=False)


if __name__ == '__main__':
    serve()
