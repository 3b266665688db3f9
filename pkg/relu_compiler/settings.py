import os

from dotenv import load_dotenv

# Load environment variables from .env file
load_dotenv()


class CompilerConfig:
    """Process-wide defaults, read once from the environment.

    CLI flags and explicit function arguments always win over these values.
    """

    def __init__(self):
        self.seed = int(os.getenv("RELU_COMPILER_SEED", "42"))
        self.side_tol = float(os.getenv("RELU_COMPILER_SIDE_TOL", "1e-9"))
        self.cls_tol = float(os.getenv("RELU_COMPILER_CLS_TOL", "1e-9"))
        self.singular_tol = float(os.getenv("RELU_COMPILER_SINGULAR_TOL", "1e-9"))
        self.workers = int(os.getenv("RELU_COMPILER_WORKERS", "4"))
        self.export_dir = os.getenv("RELU_COMPILER_EXPORT_DIR", "compiler_exports")
        self.log_level = os.getenv("RELU_COMPILER_LOG_LEVEL", "INFO")

    def as_dict(self) -> dict:
        return {
            "seed": self.seed,
            "side_tol": self.side_tol,
            "cls_tol": self.cls_tol,
            "singular_tol": self.singular_tol,
            "workers": self.workers,
        }


# Singleton instance
compiler_config = CompilerConfig()
