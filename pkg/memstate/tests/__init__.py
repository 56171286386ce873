"""
Tests for the memstate app.

The numerical modules are covered by SimpleTestCase suites that need no database; the
registry, API endpoints and the command line front end use TestCase.

Usage:
1. Run the test suite using the Django test runner:
   ```
   python manage.py test memstate
   ```
"""
