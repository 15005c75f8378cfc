import os
from dotenv import load_dotenv

load_dotenv()


class Settings:
    # integration and rank tolerances
    TOL_ODE: float = float(os.getenv("CARTAN_TOL_ODE", "1e-10"))
    TOL_RANK: float = float(os.getenv("CARTAN_TOL_RANK", "1e-5"))
    TOL_ZERO: float = float(os.getenv("CARTAN_TOL_ZERO", "1e-6"))
    TOL_ANGLE: float = float(os.getenv("CARTAN_TOL_ANGLE", "1e-4"))
    TOL_FEAS: float = float(os.getenv("CARTAN_TOL_FEAS", "1e-5"))
    GAP_RATIO: float = float(os.getenv("CARTAN_GAP_RATIO", "10"))

    # nested-difference steps for curvature jets
    JET_STEP: float = float(os.getenv("CARTAN_JET_STEP", "1e-3"))
    JET_STEP_GROWTH: float = float(os.getenv("CARTAN_JET_STEP_GROWTH", "10"))
    JET_STEP_MAX: float = float(os.getenv("CARTAN_JET_STEP_MAX", "0.1"))
    M_MAX: int = int(os.getenv("CARTAN_M_MAX", "4"))

    STENCIL_RADIUS: int = int(os.getenv("CARTAN_STENCIL_RADIUS", "1"))
    LOCAL_RADIUS_FACTOR: float = float(os.getenv("CARTAN_LOCAL_RADIUS_FACTOR", "0.4"))
    TAYLOR_STEP: float = float(os.getenv("CARTAN_TAYLOR_STEP", "1e-2"))

    WORKERS: int = int(os.getenv("CARTAN_WORKERS", "1"))
    SEED: int = int(os.getenv("CARTAN_SEED", "0"))
    LOG_LEVEL: str = os.getenv("CARTAN_LOG_LEVEL", "WARNING")

    def snapshot(self) -> dict:
        """Current values, for handing to worker processes"""
        return {key: getattr(self, key) for key in dir(self) if key.isupper()}

    def update(self, values: dict) -> None:
        for key, value in values.items():
            if not key.isupper() or not hasattr(self, key):
                raise KeyError(f"Unknown setting {key}")
            setattr(self, key, value)


settings = Settings()
