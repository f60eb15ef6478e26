APP_SLUG = "axe-cv"
VERSION = "0.1.0"
PROFILE = "development"
