# Pydantic request, response and run configuration models
