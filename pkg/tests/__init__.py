"""
Testes do KBQA ordinal: núcleo neural, KB, codificadores, raciocinadores,
geradores de dados, treino e CLI.
"""
