"""
Test module initialization file
"""

# Test-related imports and configuration
