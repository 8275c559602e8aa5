# Test suite for FastAPI Chat Agent
