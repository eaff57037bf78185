"""Result collection: statistics, constraint checking and writers"""
