// placeholder main; subcommands are wired up once the eval module lands
int main() { return 0; }
