"""
Flask application exposing the CR calculus Verification Agent.

Endpoints mirror the CLI: /api/verify runs a suite and returns the JSON
report, /api/operator prints an invariant operator, /api/matrix returns
its matrix on graded monomials.
"""

import logging
import os
from datetime import datetime
from typing import Any, Dict, Optional, Tuple

from dotenv import load_dotenv
from flask import Flask, jsonify, request
from flask_cors import CORS

from backend.services.cr_calculus.heisenberg import Signature, frame_self_check
from backend.services.cr_calculus.scalars import CalculusError
from backend.services.verification_agent.report_schema import SUITE_IDS, validate_parameters
from backend.services.verification_agent.verifier import VerificationAgent

# Load environment variables
load_dotenv()

# Configure logging
logging.basicConfig(
    level=os.getenv("CR_VERIFIER_LOG_LEVEL", "INFO").upper(),
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
)
logger = logging.getLogger(__name__)

# Initialize Flask app
app = Flask(__name__)
CORS(app)

# Global agent instance
agent: Optional[VerificationAgent] = None


def initialize_agent() -> VerificationAgent:
    """Initialize the Verification Agent with optional config overrides from the environment."""
    try:
        verifier = VerificationAgent(
            catalog_path=os.getenv("CR_SUITE_CATALOG_PATH"),
            conventions_path=os.getenv("CR_CONVENTIONS_PATH"),
        )
        logger.info("Verification Agent initialized successfully")
        return verifier
    except Exception as e:
        logger.error(f"Failed to initialize Verification Agent: {str(e)}")
        raise


def setup_app():
    """Initialize the agent before the first request."""
    global agent
    try:
        agent = initialize_agent()
    except Exception as e:
        logger.error(f"App setup failed: {str(e)}")


def _agent() -> VerificationAgent:
    global agent
    if agent is None:
        agent = initialize_agent()
    return agent


def _error(message: str, status: int) -> Tuple[Any, int]:
    return jsonify({
        'success': False,
        'error': message,
        'timestamp': datetime.now().isoformat()
    }), status


def _parameters() -> Dict[str, Any]:
    if not request.is_json:
        raise ValueError("Content-Type must be application/json")
    data = request.get_json() or {}
    if not isinstance(data, dict):
        raise ValueError("Request body must be a JSON object")
    return data


# ================================
# ROUTES
# ================================

@app.route('/api/verify', methods=['POST'])
def verify():
    """Run a verification suite; the report is returned even when checks fail."""
    try:
        params = validate_parameters(_parameters())
        logger.info(f"Running suite {params.suite} for n={params.n}")
        report = _agent().run(params)
        return jsonify({
            'success': report.all_passed,
            'report': report.model_dump(),
            'timestamp': datetime.now().isoformat()
        }), 200
    except (ValueError, CalculusError) as e:
        return _error(str(e), 400)
    except Exception as e:
        logger.exception("Error processing /api/verify request.")
        return _error(f"Internal server error: {str(e)}", 500)


@app.route('/api/operator', methods=['POST'])
def operator():
    """Build the invariant operator for the requested weight."""
    try:
        params = validate_parameters(_parameters())
        return jsonify({
            'success': True,
            'operator': _agent().operator(params),
            'timestamp': datetime.now().isoformat()
        }), 200
    except (ValueError, CalculusError) as e:
        return _error(str(e), 400)
    except Exception as e:
        logger.exception("Error processing /api/operator request.")
        return _error(f"Internal server error: {str(e)}", 500)


@app.route('/api/matrix', methods=['POST'])
def matrix():
    """Matrix of the invariant operator on graded monomials up to the requested degree."""
    try:
        params = validate_parameters(_parameters())
        return jsonify({
            'success': True,
            'matrix': _agent().matrix(params),
            'timestamp': datetime.now().isoformat()
        }), 200
    except (ValueError, CalculusError) as e:
        return _error(str(e), 400)
    except Exception as e:
        logger.exception("Error processing /api/matrix request.")
        return _error(f"Internal server error: {str(e)}", 500)


@app.route('/api/health', methods=['GET'])
def health():
    """Frame self-check plus the list of available suites."""
    try:
        frame_self_check(Signature.of(1))
        return jsonify({
            'success': True,
            'status': 'healthy',
            'suites': [s for s in SUITE_IDS if s != 'all'],
            'timestamp': datetime.now().isoformat()
        }), 200
    except CalculusError as e:
        return _error(str(e), 500)


if __name__ == '__main__':
    port = int(os.getenv('PORT', 5000))
    debug = os.getenv('DEBUG', 'False').lower() == 'true'

    logger.info(f"Starting CR verifier API on port {port} (debug={debug})")
    setup_app()
    app.run(host='0.0.0.0', port=port, debug=debug, threaded=True)
