"""Abstract Network Description Language: lexer, parser, validator and TT schedule generator"""
