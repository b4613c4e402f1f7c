import atexit
import logging
import sys

from flask import Flask, jsonify

from sketchlrf.config import ALLOW_PINNED_NOISE, LOG_FORMAT, LOG_LEVEL, MAX_STREAMS
from sketchlrf.linalg import SvdConvergenceError
from sketchlrf.registry import close_registry
from sketchlrf.routes import streams_bp, utils_bp

logging.basicConfig(
    level=LOG_LEVEL,
    format=LOG_FORMAT,
    handlers=[logging.StreamHandler(sys.stdout)]
)
logger = logging.getLogger(__name__)


def create_app() -> Flask:
    app = Flask(__name__)

    app.register_blueprint(streams_bp)
    app.register_blueprint(utils_bp)

    logger.info(f"Sketch service ready for up to {MAX_STREAMS} live streams")
    if ALLOW_PINNED_NOISE:
        logger.warning("SKETCHLRF_ALLOW_PINNED_NOISE is set: callers can pin private noise, releases are not private")

    @app.errorhandler(404)
    def not_found(error):
        return jsonify({"error": "Not found"}), 404

    @app.errorhandler(405)
    def method_not_allowed(error):
        return jsonify({"error": "Method not allowed"}), 405

    @app.errorhandler(SvdConvergenceError)
    def factorization_diverged(error):
        logger.error(f"Factorization did not converge: {error}")
        return jsonify({"error": f"Factorization did not converge: {error}"}), 422

    @app.errorhandler(500)
    def internal_error(error):
        logger.error(f"Internal server error: {error}", exc_info=True)
        return jsonify({"error": "Internal server error"}), 500

    @app.errorhandler(Exception)
    def handle_exception(error):
        logger.error(f"Unhandled exception: {error}", exc_info=True)
        return jsonify({"error": "Internal server error", "type": type(error).__name__}), 500

    return app


app = create_app()
atexit.register(close_registry)


if __name__ == '__main__':
    app.run(host='0.0.0.0', port=5000, debug=True)
