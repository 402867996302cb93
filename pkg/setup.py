#!/usr/bin/env python3
"""
Setup script for aggsolve

This script sets up the development environment, installs dependencies
and runs the LQ1 smoke sweep.
"""

import sys
import subprocess
import platform
from pathlib import Path


def run_command(command, description):
    """Run a shell command and handle errors"""
    print(f"🔄 {description}...")
    try:
        subprocess.run(command, shell=True, check=True, capture_output=True, text=True)
        print(f"✅ {description} completed successfully")
        return True
    except subprocess.CalledProcessError as e:
        print(f"❌ Error during {description}:")
        print(f"Command: {command}")
        print(f"Error: {e.stderr}")
        return False


def check_python_version():
    """Check if Python version is 3.9 or higher"""
    version = sys.version_info
    if version < (3, 9):
        print("❌ Python 3.9 or higher is required")
        print(f"Current version: {version.major}.{version.minor}.{version.micro}")
        return False
    print(f"✅ Python version {version.major}.{version.minor}.{version.micro} is supported")
    return True


def venv_bin(name):
    if platform.system() == "Windows":
        return f"backend\\venv\\Scripts\\{name}"
    return f"backend/venv/bin/{name}"


def create_virtual_environment():
    """Create Python virtual environment"""
    if Path("backend/venv").exists():
        print("✅ Virtual environment already exists")
        return True
    return run_command(f"{sys.executable} -m venv backend/venv", "Creating Python virtual environment")


def install_python_dependencies():
    return run_command(f"{venv_bin('pip')} install -r backend/requirements.txt", "Installing Python dependencies")


def create_env_file():
    """Create .env file from example"""
    env_path = Path("backend/.env")
    env_example_path = Path("backend/.env.example")

    if env_path.exists():
        print("✅ .env file already exists")
        return True
    if not env_example_path.exists():
        print("❌ .env.example file not found")
        return False
    env_path.write_text(env_example_path.read_text())
    print("✅ Created .env file from example")
    return True


def run_smoke_sweep():
    return run_command(
        f"cd backend && {Path(venv_bin('python')).resolve()} -m scripts.smoke_lq1",
        "Running the LQ1 smoke sweep",
    )


def main():
    """Main setup function"""
    print("📈 aggsolve Setup")
    print("=" * 40)

    if not check_python_version():
        sys.exit(1)

    print("\n🐍 Setting up Python environment...")
    for step in (create_virtual_environment, install_python_dependencies, create_env_file, run_smoke_sweep):
        if not step():
            sys.exit(1)

    print("\n✅ Setup completed successfully!")
    print("\n🚀 Next steps:")
    print("1. Run the tests: 'pytest' (add '-m slow' for the full ν sweeps)")
    print("2. Sweep a benchmark: 'python backend/main.py sweep --config backend/data/benchmarks/lq_hetero.yaml --out sweep.csv'")
    print("3. Verify a config: 'python backend/main.py verify --config backend/data/benchmarks/lq1_homogeneous.yaml'")

    print("\n💡 To activate the Python environment:")
    if platform.system() == "Windows":
        print("   backend\\venv\\Scripts\\activate")
    else:
        print("   source backend/venv/bin/activate")


if __name__ == "__main__":
    main()
