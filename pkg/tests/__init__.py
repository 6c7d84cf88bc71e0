# tests — Unit, Property and Acceptance Tests
