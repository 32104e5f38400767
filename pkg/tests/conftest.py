from hypothesis import HealthCheck, settings

# Reproducible property tests: no example database, derandomized shrinking.
settings.register_profile(
    "laic",
    derandomize=True,
    database=None,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("laic")
