"""
Room acoustics and moving-source synthesis.

scene -> rir -> trajectory -> synthesis form the simulation chain; loudness,
audio_io and mixer turn rendered stems into dataset groups.
"""
